fn main() {
    std::process::exit(jointparse::cli::main());
}
