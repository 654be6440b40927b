fn main() {
    std::process::exit(camel::cli::main());
}
