fn main() {
    std::process::exit(mpnode::cli::main_with_args(std::env::args_os()));
}
