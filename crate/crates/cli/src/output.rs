//! Number formatting and file writing shared by the commands.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

/// `x` rounded to 9 significant digits; non-finite values pass through.
pub fn round9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Shortest decimal text of `round9(x)`, without exponent.
pub fn fmt_num(x: f64) -> String {
    let r = round9(x);
    if r.is_finite() {
        format!("{r}")
    } else {
        "NaN".into()
    }
}

/// JSON number rounded to 9 significant digits, `null` when not finite.
pub fn json_num(x: f64) -> serde_json::Value {
    serde_json::Number::from_f64(round9(x)).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.partial"));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_num(std::f64::consts::PI), "3.14159265");
        assert_eq!(fmt_num(123456789012.0), "123456789000");
        assert_eq!(fmt_num(0.000123456789123), "0.000123456789");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(json_num(f64::NAN), serde_json::Value::Null);
        assert_eq!(round9(round9(1.0 / 3.0)), round9(1.0 / 3.0));
    }
}
