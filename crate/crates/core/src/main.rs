fn main() {
    std::process::exit(splitplot_lcrt::cli::main_entry());
}
