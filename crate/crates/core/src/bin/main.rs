fn main() {
    std::process::exit(verisearch::cli::run(std::env::args_os()));
}
