fn main() {
    std::process::exit(commodity_pmcmc::cli::run(std::env::args_os()));
}
