fn main() {
    std::process::exit(pdcascade::cli::run());
}
