fn main() {
    std::process::exit(grant::cli::run(std::env::args_os()));
}
