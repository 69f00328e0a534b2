fn main() {
    std::process::exit(hades_bench::cli::cli_main(std::env::args_os()));
}
