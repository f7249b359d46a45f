fn main() {
    std::process::exit(ehspc::cli::main_entry());
}
