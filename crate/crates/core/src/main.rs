fn main() {
    std::process::exit(biconvex::cli::run(std::env::args_os()));
}
