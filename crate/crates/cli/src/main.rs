fn main() {
    std::process::exit(sectorscope_cli::dispatch(std::env::args_os()));
}
