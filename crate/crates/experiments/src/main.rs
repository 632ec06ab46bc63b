fn main() {
    std::process::exit(srmac_experiments::cli::main_with(std::env::args_os().collect()));
}
