fn main() {
    std::process::exit(limitfield::cli::main());
}
