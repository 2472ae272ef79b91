fn main() {
    std::process::exit(tissue_topo::cli::main_with_args(std::env::args_os()));
}
