// Compares the power-method and DFT spectral-norm estimates of a random
// zero-mean convolution stack.
use wcrr::convstack::ConvStack;

fn main() -> wcrr::error::Result<()> {
    let stack = ConvStack::random(&[4, 8, 8], 3, 5)?;
    for n in [16, 32, 64] {
        let power = stack.spectral_norm_power(n, n, 1000);
        let dft = stack.spectral_norm_dft(n, n)?;
        println!("{n:>3}x{n:<3} power {power:.6}  dft {dft:.6}");
    }
    Ok(())
}
