// Prints the certificates of a checkpoint and writes its activation profile,
// filters and alpha curves. Usage: inspect_model <checkpoint>
fn main() -> wcrr::error::Result<()> {
    let ckpt = std::env::args().nth(1).expect("usage: inspect_model <checkpoint>");
    let out = std::env::temp_dir().join("wcrr_inspect_example");
    let flags = ["--checkpoint".to_string(), ckpt, "--out_dir".into(), out.to_str().unwrap().into()];
    let summary = wcrr::cli::run("inspect", None, &flags)?;
    println!("{}", summary.to_text());
    println!("files written to {}", out.display());
    Ok(())
}
