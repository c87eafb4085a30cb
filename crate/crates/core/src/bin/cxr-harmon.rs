fn main() {
    std::process::exit(cxr_harmon::cli::main());
}
