fn main() {
    std::process::exit(qtomo_cli::main_with_args(std::env::args_os()));
}
