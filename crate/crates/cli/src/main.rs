fn main() -> anyhow::Result<()> {
    anf_cli::cli::main()
}
