fn main() {
    std::process::exit(evalign::harness::cli::main(std::env::args_os()));
}
