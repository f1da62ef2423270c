fn main() {
    std::process::exit(pead::harness::cli::cli_main(std::env::args_os()));
}
