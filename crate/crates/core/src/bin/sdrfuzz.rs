fn main() {
    std::process::exit(sdrfuzz::cli::main_with_env());
}
