fn main() {
    std::process::exit(subthermal::cli::run(std::env::args_os()));
}
