fn main() {
    std::process::exit(causalmed_cli::main_with_args(std::env::args_os().skip(1)));
}
