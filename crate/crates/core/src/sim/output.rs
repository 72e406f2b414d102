//! CSV and text outputs of a run.

use std::fmt::Write as _;
use std::path::Path;

use super::monitor::Verdicts;
use super::run::SimReport;
use crate::admission::Verdict;
use crate::energy::REFERENCE_C_STAR;
use crate::Result;

/// Fixed 9-significant-digit decimal. Zero (of either sign) prints as `0`,
/// non-finite values as `inf`, `-inf` or `nan`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let mut out = String::with_capacity(24);
    if negative {
        out.push('-');
    }
    if exp < 0 {
        out.push_str("0.");
        for _ in 0..(-exp - 1) {
            out.push('0');
        }
        out.push_str(&digits);
    } else {
        let int_len = exp as usize + 1;
        if int_len >= digits.len() {
            out.push_str(&digits);
            for _ in digits.len()..int_len {
                out.push('0');
            }
        } else {
            out.push_str(&digits[..int_len]);
            out.push('.');
            out.push_str(&digits[int_len..]);
        }
    }
    out
}

pub fn trajectory_csv(report: &SimReport) -> String {
    let mut s = String::from("t,vehicle_id,x,y,z,vx,vy,vz,ux,uy,uz\n");
    for r in &report.trajectory {
        let (q, v, u) = (r.state.q, r.state.qdot, r.u);
        let cols = [q.x, q.y, q.z, v.x, v.y, v.z, u.x, u.y, u.z].map(fmt_num);
        let _ = writeln!(s, "{},{},{}", fmt_num(r.t), r.id, cols.join(","));
    }
    s
}

pub fn monitors_csv(report: &SimReport) -> String {
    let mut s = String::from("t,min_sep,min_speed,max_speed,min_wall_dist,V_p,V_b,V_k,H\n");
    for r in &report.monitors {
        let e = r.energy;
        let cols = [r.t, r.min_sep, r.min_speed, r.max_speed, r.min_wall_dist, e.v_p, e.v_b, e.v_k, e.h].map(fmt_num);
        let _ = writeln!(s, "{}", cols.join(","));
    }
    s
}

fn verdict_lines(s: &mut String, verdicts: &Verdicts) {
    for (name, v) in verdicts.named() {
        let status = if v.pass { "PASS" } else { "FAIL" };
        let _ = write!(s, "  {name:<28} {status}  worst={}", fmt_num(v.worst));
        if let Some(t) = v.first_violation_t {
            let _ = write!(s, "  first_violation_t={}", fmt_num(t));
        }
        s.push('\n');
    }
}

pub fn report_text(report: &SimReport) -> String {
    let mut s = String::new();
    let th = &report.thresholds;
    let _ = writeln!(s, "duration_s {}", fmt_num(report.final_t));
    let _ = writeln!(s, "steps {}", report.monitors.len());
    let _ = writeln!(s, "final_vehicles {}", report.final_fleet.len());
    s.push_str("\nthresholds\n");
    let _ = writeln!(s, "  c1 {}", fmt_num(th.c1));
    let _ = writeln!(s, "  c1_reference {} (published value; differs from the formula)", fmt_num(REFERENCE_C_STAR));
    let _ = writeln!(s, "  c2 {}", fmt_num(th.c2));
    let _ = writeln!(s, "  c3 {}", fmt_num(th.c3));
    let _ = writeln!(s, "  c_star {}", fmt_num(th.c_star));

    s.push_str("\nverdicts\n");
    verdict_lines(&mut s, &report.verdicts);

    s.push_str("\nadmission\n");
    match (&report.budget, &report.lambda) {
        (Some(b), lambda) => {
            if let Some(l) = lambda {
                let _ = writeln!(s, "  lambda_hat {} at_t {}", fmt_num(l.lambda), fmt_num(l.t_at));
            }
            let _ = writeln!(s, "  lambda_budget {}", fmt_num(b.lambda_hat));
            let _ = writeln!(s, "  period {}", fmt_num(b.period));
            let _ = writeln!(s, "  kappa {}", fmt_num(b.kappa));
            let _ = writeln!(s, "  gamma {}", fmt_num(b.gamma));
            let _ = writeln!(s, "  allowance {}", fmt_num(b.entry_allowance()));
            let _ = writeln!(s, "  m_max {}", b.m_max);
        }
        (None, _) => s.push_str("  no entry schedule\n"),
    }
    let _ = writeln!(s, "  admitted_entrants {}", report.admitted_entrants());
    let _ = writeln!(s, "  blocked_groups {}", report.blocked_groups);
    for e in &report.entries {
        let ids: Vec<String> = e.ids.iter().map(u32::to_string).collect();
        let verdict = match &e.verdict {
            Verdict::Admit => "admit".to_string(),
            Verdict::Reject(r) => format!("reject {r}"),
        };
        let _ = writeln!(
            s,
            "  t={} ids=[{}] injected={} kappa={} gamma={} h_before={} {}",
            fmt_num(e.t),
            ids.join(" "),
            e.injected,
            fmt_num(e.energy.kappa),
            fmt_num(e.energy.gamma),
            fmt_num(e.h_before),
            verdict
        );
    }

    let p = &report.peak;
    s.push_str("\npeak inputs\n");
    let _ = writeln!(s, "  accel_norm {}", fmt_num(p.accel));
    let _ = writeln!(s, "  longitudinal_accel {}", fmt_num(p.longitudinal));
    let _ = writeln!(s, "  turn_rate {}", fmt_num(p.turn_rate));
    let _ = writeln!(s, "  vertical_accel {}", fmt_num(p.vertical));
    s
}

/// Writes `trajectory.csv`, `monitors.csv` and `report.txt` into `dir`.
pub fn write_outputs(report: &SimReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("trajectory.csv"), trajectory_csv(report))?;
    std::fs::write(dir.join("monitors.csv"), monitors_csv(report))?;
    std::fs::write(dir.join("report.txt"), report_text(report))?;
    Ok(())
}
