fn main() {
    std::process::exit(medbin::cli::main_with_args(std::env::args_os()));
}
