fn main() {
    std::process::exit(aberro::cli::main_with_args(std::env::args_os()));
}
