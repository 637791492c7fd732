fn main() {
    std::process::exit(gasflow_cli::run(std::env::args_os()));
}
