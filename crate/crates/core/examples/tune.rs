// Tunes lambda and sigma for 4x MRI on two validation phantoms with the
// coarse-to-fine grid search, then reconstructs Shepp-Logan with the result.
// Usage: tune <checkpoint> [mri|ct]
fn flags(pairs: &[(&str, &str)]) -> Vec<String> {
    pairs.iter().flat_map(|(k, v)| [format!("--{k}"), v.to_string()]).collect()
}

fn main() -> wcrr::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = args.next().expect("usage: tune <checkpoint> [mri|ct]");
    let problem = args.next().unwrap_or_else(|| "mri".into());
    let out = std::env::temp_dir().join("wcrr_tune_example");
    let tuned = wcrr::cli::run(
        "tune",
        None,
        &flags(&[
            ("checkpoint", &ckpt),
            ("problem", &problem),
            ("validation", "phantom:1,phantom:2"),
            ("grid", "3"),
            ("rounds", "2"),
            ("out_dir", out.join("tune").to_str().unwrap()),
        ]),
    )?;
    println!("{}", tuned.to_text());
    let (lambda, sigma) = (tuned.get("lambda").unwrap(), tuned.get("sigma").unwrap());
    let rec = wcrr::cli::run(
        "reconstruct",
        None,
        &flags(&[
            ("checkpoint", &ckpt),
            ("problem", &problem),
            ("lambda", lambda),
            ("sigma", sigma),
            ("out_dir", out.join("reconstruct").to_str().unwrap()),
        ]),
    )?;
    println!("{}", rec.to_text());
    Ok(())
}
