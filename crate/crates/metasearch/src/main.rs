fn main() {
    std::process::exit(metasearch::cli::run());
}
