fn main() {
    std::process::exit(vlp::cli::run_command(std::env::args_os()));
}
