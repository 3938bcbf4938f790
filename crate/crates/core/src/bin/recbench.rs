fn main() {
    std::process::exit(recbench::cli::run_command(std::env::args_os()));
}
