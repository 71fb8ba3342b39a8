fn main() {
    std::process::exit(combwalk::cli::run());
}
