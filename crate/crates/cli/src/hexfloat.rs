//! Exact `f64` text encoding in C99 `%a` style.

/// `0x1.<13 hex digits>p<exp>` for normal numbers, `0x0.<digits>p-1022` for
/// subnormals; `inf`, `-inf` and `nan` otherwise.
pub fn format(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = bits & ((1u64 << 52) - 1);
    match (exp, mantissa) {
        (0, 0) => format!("{sign}0x0p+0"),
        (0, m) => format!("{sign}0x0.{m:013x}p-1022"),
        (e, m) => format!("{sign}0x1.{m:013x}p{:+}", e - 1023),
    }
}

pub fn parse(s: &str) -> Result<f64, String> {
    match s.trim() {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => hexf_parse::parse_hexf64(t, false).map_err(|e| format!("bad hexfloat {t:?}: {e}")),
    }
}
