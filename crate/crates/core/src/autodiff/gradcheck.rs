use super::{Graph, Tensor, Var};

/// Compares `backward` against central finite differences of step `h`.
///
/// `f` builds a scalar from tracked leaves holding `inputs` (in order).
/// Returns the relative error `‖a − n‖ / max(‖a‖, ‖n‖)` over all input
/// entries jointly, or 0 when both gradients vanish.
pub fn gradient_error<E>(
    inputs: &[Tensor],
    h: f64,
    f: impl Fn(&mut Graph, &[Var]) -> Result<Var, E>,
) -> Result<f64, E> {
    let eval = |values: &[Tensor]| -> Result<f64, E> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.scalar(out))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out).expect("gradient check root must be a scalar");

    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    let mut probe = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).expect("tracked leaf").data().to_vec();
        for (j, a) in analytic.into_iter().enumerate() {
            let orig = probe[i].data()[j];
            probe[i].data_mut()[j] = orig + h;
            let up = eval(&probe)?;
            probe[i].data_mut()[j] = orig - h;
            let down = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            diff += (a - numeric) * (a - numeric);
            na += a * a;
            nn += numeric * numeric;
        }
    }
    let scale = na.sqrt().max(nn.sqrt());
    Ok(if scale == 0.0 { 0.0 } else { diff.sqrt() / scale })
}
