fn main() {
    std::process::exit(stylestroke_cli::run_command(std::env::args_os()));
}
