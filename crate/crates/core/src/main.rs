fn main() {
    std::process::exit(roadfield::cli::main_entry());
}
