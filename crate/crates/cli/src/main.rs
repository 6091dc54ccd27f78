fn main() {
    std::process::exit(levy_em_cli::main_with_args(std::env::args_os()));
}
