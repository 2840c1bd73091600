fn main() {
    std::process::exit(dmkit::cli::main_with_args(std::env::args_os()));
}
