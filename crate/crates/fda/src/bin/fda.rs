fn main() {
    std::process::exit(fda::cli::run(std::env::args_os()));
}
