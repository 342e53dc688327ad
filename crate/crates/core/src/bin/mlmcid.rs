fn main() {
    std::process::exit(mlmcid::cli::main_entry());
}
