//! Generates one scenario per road template, writes them as JSON and reads
//! them back.

use anchorplay::scenario::{generate_with_profile, read_scenario_dir, write_scenario, Template};

fn main() -> anchorplay::error::Result<()> {
    let dir = std::env::temp_dir().join("anchorplay_scenarios");
    std::fs::create_dir_all(&dir).map_err(|e| anchorplay::error::Error::io(&dir, e))?;
    for (i, t) in Template::ALL.into_iter().enumerate() {
        let gen = generate_with_profile(t, 6, 100 + i as u64)?;
        let s = &gen.scenario;
        let speeds: Vec<String> = gen.desired_speeds.iter().map(|v| format!("{v:.1}")).collect();
        println!(
            "{:<12} id={} agents={} steps={} lanes={} desired speeds [{}]",
            t.to_string(),
            s.id,
            s.num_agents(),
            s.track_len(),
            s.road_graph.lane_centerlines.len(),
            speeds.join(", ")
        );
        write_scenario(&dir.join(format!("{t}.json")), s)?;
    }
    let back = read_scenario_dir(&dir)?;
    println!("read back {} scenarios from {}", back.len(), dir.display());
    Ok(())
}
