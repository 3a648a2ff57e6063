fn main() {
    std::process::exit(specs_core::cli::run(std::env::args_os()));
}
