use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::SubstepRecord;

pub const DUMP_HEADER: &str = "scenario_id,step,agent_id,x,y,heading,speed,collided,offroad,goal";

/// Writes per-step agent states as CSV. Agents not present at a step are skipped.
pub fn write_rollout_csv(path: &Path, scenario_id: &str, records: &[SubstepRecord]) -> Result<()> {
    let mut out = String::from(DUMP_HEADER);
    out.push('\n');
    for rec in records {
        for (i, a) in rec.agents.iter().enumerate() {
            if !a.valid {
                continue;
            }
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                scenario_id,
                rec.step,
                i,
                a.pose.x,
                a.pose.y,
                a.pose.heading,
                a.speed,
                rec.collided[i] as u8,
                rec.offroad[i] as u8,
                rec.at_goal[i] as u8
            )
            .expect("writing to a String cannot fail");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
