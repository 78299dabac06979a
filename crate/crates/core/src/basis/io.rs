//! CSV serialization of spectral fields.

use std::io::{Read, Write};
use std::sync::Arc;

use super::field::{Basis, SpectralField};
use super::mode::{enumerate_modes, ModeIndex, Parity};
use crate::error::{Error, Result};

pub const FIELD_HEADER: [&str; 8] = ["mode_id", "kind", "kx", "ky", "kz", "pol", "parity", "coeff"];

fn mode_columns(z: &ModeIndex) -> [String; 6] {
    match *z {
        ModeIndex::Constant { axis } => [
            "constant".into(),
            "0".into(),
            "0".into(),
            "0".into(),
            axis.to_string(),
            "none".into(),
        ],
        ModeIndex::Wave { k, pol, parity } => [
            "wave".into(),
            k[0].to_string(),
            k[1].to_string(),
            k[2].to_string(),
            pol.to_string(),
            parity.as_str().into(),
        ],
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad {what}: {s:?}")))
}

fn parse_mode(rec: &csv::StringRecord) -> Result<ModeIndex> {
    let kind = rec.get(1).unwrap_or("");
    let k = [
        parse::<i32>(&rec[2], "kx")?,
        parse::<i32>(&rec[3], "ky")?,
        parse::<i32>(&rec[4], "kz")?,
    ];
    let pol: u8 = parse(&rec[5], "pol")?;
    match kind {
        "constant" if pol < 3 => Ok(ModeIndex::Constant { axis: pol }),
        "wave" if pol < 2 && super::mode::is_canonical(k) => {
            let parity = match &rec[6] {
                "cos" => Parity::Cos,
                "sin" => Parity::Sin,
                p => return Err(Error::Parse(format!("bad parity {p:?}"))),
            };
            Ok(ModeIndex::Wave { k, pol, parity })
        }
        _ => Err(Error::Parse(format!("bad mode row {:?}", rec))),
    }
}

/// Rebuilds a basis from an ordered mode list: the longest Galerkin prefix plus extras.
pub fn basis_from_modes(modes: &[ModeIndex]) -> Result<Arc<Basis>> {
    let mut m = 0;
    loop {
        let next = enumerate_modes(m + 1);
        if next.len() <= modes.len() && next[..] == modes[..next.len()] {
            m += 1;
        } else {
            break;
        }
    }
    let base = enumerate_modes(m).len();
    if modes.len() < base || enumerate_modes(m)[..] != modes[..base] {
        return Err(Error::Parse("mode list does not start with the constant modes".into()));
    }
    let basis = Basis::extended(m, modes[base..].iter().copied());
    if basis.modes() != modes {
        return Err(Error::Parse("mode list contains duplicates".into()));
    }
    Ok(basis)
}

/// Galerkin basis with exactly `len` modes.
pub fn galerkin_for_len(len: usize) -> Result<Arc<Basis>> {
    for m in 0..=64 {
        let n = enumerate_modes(m).len();
        if n == len {
            return Ok(Basis::galerkin(m));
        }
        if n > len {
            break;
        }
    }
    Err(Error::Parse(format!("{len} modes is not the size of any B_m")))
}

pub fn write_field<W: Write>(u: &SpectralField, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIELD_HEADER)?;
    for (i, (z, c)) in u.basis().modes().iter().zip(u.coeffs()).enumerate() {
        let cols = mode_columns(z);
        w.write_record([
            i.to_string(),
            cols[0].clone(),
            cols[1].clone(),
            cols[2].clone(),
            cols[3].clone(),
            cols[4].clone(),
            cols[5].clone(),
            format!("{c}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field<R: Read>(input: R) -> Result<SpectralField> {
    let mut r = csv::Reader::from_reader(input);
    let mut modes = Vec::new();
    let mut coeffs = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != FIELD_HEADER.len() {
            return Err(Error::Parse(format!("row {row} has {} columns", rec.len())));
        }
        let id: usize = parse(&rec[0], "mode_id")?;
        if id != row {
            return Err(Error::Parse(format!("mode_id {id} out of order at row {row}")));
        }
        modes.push(parse_mode(&rec)?);
        coeffs.push(parse::<f64>(&rec[7], "coeff")?);
    }
    let basis = basis_from_modes(&modes)?;
    SpectralField::from_coeffs(&basis, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip_is_exact() {
        let b = Basis::extended(1, [ModeIndex::wave([7, 0, 0], 0, Parity::Sin)]);
        let coeffs: Vec<f64> = (0..b.len()).map(|i| (i as f64).sin() / 3.0).collect();
        let u = SpectralField::from_coeffs(&b, coeffs).unwrap();
        let mut buf = Vec::new();
        write_field(&u, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("mode_id,kind,kx,ky,kz,pol,parity,coeff\n"));
        let back = read_field(&buf[..]).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn galerkin_sizes() {
        assert_eq!(galerkin_for_len(67).unwrap().cutoff(), 2);
        assert!(galerkin_for_len(66).is_err());
    }
}
