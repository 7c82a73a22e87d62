fn main() {
    std::process::exit(unimodal_cli::run_command(std::env::args_os()));
}
