fn main() {
    std::process::exit(rmpflow_cli::main_with_args(std::env::args_os()));
}
