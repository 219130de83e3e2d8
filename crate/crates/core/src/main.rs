fn main() {
    std::process::exit(msgate::cli::main_with_args(std::env::args_os()));
}
