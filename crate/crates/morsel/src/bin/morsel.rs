fn main() {
    std::process::exit(morsel::cli::run());
}
