fn main() {
    std::process::exit(querysift::cli::main_with_args(std::env::args_os()));
}
