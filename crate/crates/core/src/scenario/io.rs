use std::fmt::Write as _;

use super::{Point, Scenario};
use crate::error::{Error, Result};
use crate::numerics::RMatrix;

const RAU_HEADER: &str = "rau,x,y";
const USER_HEADER: &str = "user,kind,group,x,y";
const GAIN_HEADER: &str = "kind,group,user,rau,gain";

/// 17 significant digits, enough to recover every `f64` exactly.
fn exact(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes positions and gains as three CSV blocks.
pub fn write_scenario_csv(scn: &Scenario) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{RAU_HEADER}");
    for (n, p) in scn.rau_positions.iter().enumerate() {
        let _ = writeln!(out, "{n},{},{}", exact(p.x), exact(p.y));
    }
    let _ = writeln!(out, "{USER_HEADER}");
    for (u, p) in scn.unicast_positions.iter().enumerate() {
        let _ = writeln!(out, "{u},unicast,,{},{}", exact(p.x), exact(p.y));
    }
    for (m, group) in scn.multicast_positions.iter().enumerate() {
        for (k, p) in group.iter().enumerate() {
            let _ = writeln!(out, "{k},multicast,{m},{},{}", exact(p.x), exact(p.y));
        }
    }
    let _ = writeln!(out, "{GAIN_HEADER}");
    for u in 0..scn.beta.cols() {
        for n in 0..scn.beta.rows() {
            let _ = writeln!(out, "unicast,,{u},{n},{}", exact(scn.beta.get(n, u)));
        }
    }
    for (m, e) in scn.eta.iter().enumerate() {
        for k in 0..e.cols() {
            for n in 0..e.rows() {
                let _ = writeln!(out, "multicast,{m},{k},{n},{}", exact(e.get(n, k)));
            }
        }
    }
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Block {
    None,
    Rau,
    User,
    Gain,
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("scenario CSV line {line}: {msg}"))
}

fn num<T: std::str::FromStr>(line: usize, field: &str) -> Result<T> {
    field.parse().map_err(|_| bad(line, format!("cannot parse `{field}`")))
}

/// Group slot `m` of a growing per-group list, created on demand in order.
fn slot<T: Default>(groups: &mut Vec<T>, m: usize, line: usize) -> Result<&mut T> {
    if m == groups.len() {
        groups.push(T::default());
    }
    groups.get_mut(m).ok_or_else(|| bad(line, "groups must appear in order"))
}

/// Parses the output of [`write_scenario_csv`].
pub fn read_scenario_csv(text: &str) -> Result<Scenario> {
    let mut block = Block::None;
    let mut raus = Vec::new();
    let mut unicast = Vec::new();
    let mut multicast: Vec<Vec<Point>> = Vec::new();
    // (rau, value) lists per user, in file order.
    let mut beta_cols: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut eta_cols: Vec<Vec<Vec<(usize, f64)>>> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        match row {
            RAU_HEADER => {
                block = Block::Rau;
                continue;
            }
            USER_HEADER => {
                block = Block::User;
                continue;
            }
            GAIN_HEADER => {
                block = Block::Gain;
                continue;
            }
            _ => {}
        }
        let f: Vec<&str> = row.split(',').collect();
        match block {
            Block::None => return Err(bad(line, "data before any header")),
            Block::Rau => {
                if f.len() != 3 || num::<usize>(line, f[0])? != raus.len() {
                    return Err(bad(line, "expected `index,x,y` with sequential index"));
                }
                raus.push(Point::new(num(line, f[1])?, num(line, f[2])?));
            }
            Block::User => {
                if f.len() != 5 {
                    return Err(bad(line, "expected 5 fields"));
                }
                let index: usize = num(line, f[0])?;
                let p = Point::new(num(line, f[3])?, num(line, f[4])?);
                let list = match f[1] {
                    "unicast" if f[2].is_empty() => &mut unicast,
                    "multicast" => slot(&mut multicast, num(line, f[2])?, line)?,
                    _ => return Err(bad(line, format!("unknown user kind `{}`", f[1]))),
                };
                if index != list.len() {
                    return Err(bad(line, "user indices must be sequential"));
                }
                list.push(p);
            }
            Block::Gain => {
                if f.len() != 5 {
                    return Err(bad(line, "expected 5 fields"));
                }
                let user: usize = num(line, f[2])?;
                let rau: usize = num(line, f[3])?;
                let gain: f64 = num(line, f[4])?;
                let cols = match f[0] {
                    "unicast" if f[1].is_empty() => &mut beta_cols,
                    "multicast" => slot(&mut eta_cols, num(line, f[1])?, line)?,
                    _ => return Err(bad(line, format!("unknown gain kind `{}`", f[0]))),
                };
                if user == cols.len() {
                    cols.push(Vec::new());
                }
                let col = cols.get_mut(user).ok_or_else(|| bad(line, "users must appear in order"))?;
                if rau != col.len() {
                    return Err(bad(line, "RAU indices must be sequential"));
                }
                col.push((rau, gain));
            }
        }
    }

    let n = beta_cols.first().or_else(|| eta_cols.iter().flatten().next()).map_or(0, Vec::len);
    let to_matrix = |cols: &[Vec<(usize, f64)>]| -> Result<RMatrix> {
        if cols.iter().any(|c| c.len() != n) {
            return Err(Error::Format("every user needs one gain per RAU".into()));
        }
        Ok(RMatrix::from_fn(n, cols.len(), |r, c| cols[c][r].1))
    };
    let beta = to_matrix(&beta_cols)?;
    let eta = eta_cols.iter().map(|c| to_matrix(c)).collect::<Result<Vec<_>>>()?;
    let mut scn = Scenario::from_gains(beta, eta)?;
    let has_positions = !raus.is_empty();
    if has_positions {
        let shape_ok = raus.len() == scn.n_raus()
            && unicast.len() == scn.n_unicast()
            && multicast.iter().map(Vec::len).collect::<Vec<_>>() == scn.group_sizes();
        if !shape_ok {
            return Err(Error::Format("positions and gains disagree in shape".into()));
        }
        scn.rau_positions = raus;
        scn.unicast_positions = unicast;
        scn.multicast_positions = multicast;
    }
    Ok(scn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SimRng;
    use crate::scenario::{place_uniform, SystemConfig};

    #[test]
    fn round_trip_is_bit_exact() {
        for seed in 0..5 {
            let scn = place_uniform(&SystemConfig::default(), &mut SimRng::new(seed)).unwrap();
            let text = write_scenario_csv(&scn);
            let back = read_scenario_csv(&text).unwrap();
            assert_eq!(back, scn);
            assert_eq!(write_scenario_csv(&back), text);
        }
    }

    #[test]
    fn gains_only_round_trip() {
        let beta = RMatrix::from_fn(2, 3, |r, c| 0.1 + r as f64 / 3.0 + c as f64);
        let eta = vec![RMatrix::from_fn(2, 1, |r, _| 1e-9 * (r + 1) as f64)];
        let scn = Scenario::from_gains(beta, eta).unwrap();
        let back = read_scenario_csv(&write_scenario_csv(&scn)).unwrap();
        assert_eq!(back, scn);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_scenario_csv("1,2,3\n").is_err());
        assert!(read_scenario_csv("rau,x,y\n1,0,0\n").is_err());
        assert!(read_scenario_csv("kind,group,user,rau,gain\nunicast,,0,0,-1\n").is_err());
        assert!(read_scenario_csv("kind,group,user,rau,gain\nunicast,,0,0,1\nunicast,,1,1,1\n").is_err());
    }
}
