//! Bessel functions of the first kind and integer order, for the
//! Jacobi-Anger expansion `exp(i r cos t) = sum_k i^k J_k(r) exp(i k t)`.

/// `[J_0(x), ..., J_nmax(x)]` by Miller's backward recurrence, normalized with
/// `J_0 + 2 sum J_2k = 1`.
pub fn bessel_j_upto(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = nmax.max(ax.ceil() as usize);
    let mut start = top + 20 + (12.0 * ax.sqrt()) as usize;
    if start % 2 == 1 {
        start += 1;
    }

    let mut next = 0.0f64; // J_{k+1}
    let mut cur = 1e-300f64; // J_k
    let mut norm = 0.0f64;
    let mut tmp = vec![0.0; start + 1];
    tmp[start] = cur;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / ax * cur - next;
        next = cur;
        cur = prev;
        tmp[k - 1] = cur;
        if cur.abs() > 1e250 {
            for v in tmp.iter_mut().skip(k - 1) {
                *v *= 1e-250;
            }
            next *= 1e-250;
            cur *= 1e-250;
        }
    }
    for (k, v) in tmp.iter().enumerate() {
        if k == 0 {
            norm += v;
        } else if k % 2 == 0 {
            norm += 2.0 * v;
        }
    }
    for (k, o) in out.iter_mut().enumerate() {
        let mut v = tmp[k] / norm;
        if x < 0.0 && k % 2 == 1 {
            v = -v;
        }
        *o = v;
    }
    out
}

/// `J_n(x)` for any integer `n`, using `J_{-n} = (-1)^n J_n`.
pub fn bessel_j(n: i64, x: f64) -> f64 {
    let k = n.unsigned_abs() as usize;
    let v = bessel_j_upto(k, x)[k];
    if n < 0 && k % 2 == 1 {
        -v
    } else {
        v
    }
}
