fn main() {
    std::process::exit(prism_cli::main_with_args(std::env::args_os()));
}
