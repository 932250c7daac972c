fn main() {
    std::process::exit(footformer::cli::main_with_args(std::env::args_os()));
}
