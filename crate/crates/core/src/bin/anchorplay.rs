fn main() {
    std::process::exit(anchorplay::cli::run_command(std::env::args_os()));
}
