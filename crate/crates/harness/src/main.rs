fn main() {
    std::process::exit(infoplane_harness::cli::main_with_args(std::env::args_os()));
}
