use super::StabilityError;

const BODY25_TABLE: &str = include_str!("dempster_body25.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub proximal: usize,
    pub distal: usize,
    pub mass_fraction: f64,
    /// Position of the segment's CoM from proximal (0) to distal (1).
    pub com_ratio: f64,
}

/// Segment masses and CoM positions for whole-body CoM estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTable {
    pub segments: Vec<Segment>,
}

impl SegmentTable {
    /// Standard Dempster fractions for the BODY25 joints.
    pub fn body25() -> Self {
        Self::parse(BODY25_TABLE).expect("bundled segment table")
    }

    /// Whitespace-separated `name proximal distal mass ratio` lines.
    pub fn parse(text: &str) -> Result<Self, StabilityError> {
        let mut segments = Vec::new();
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || StabilityError::Table(format!("bad segment line {line:?}"));
            if f.len() != 5 {
                return Err(bad());
            }
            segments.push(Segment {
                name: f[0].to_string(),
                proximal: f[1].parse().map_err(|_| bad())?,
                distal: f[2].parse().map_err(|_| bad())?,
                mass_fraction: f[3].parse().map_err(|_| bad())?,
                com_ratio: f[4].parse().map_err(|_| bad())?,
            });
        }
        let table = SegmentTable { segments };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), StabilityError> {
        let total: f64 = self.segments.iter().map(|s| s.mass_fraction).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(StabilityError::Table(format!("mass fractions sum to {total}, not 1")));
        }
        if self.segments.iter().any(|s| s.mass_fraction < 0.0) {
            return Err(StabilityError::Table("negative mass fraction".into()));
        }
        Ok(())
    }
}

/// Mass-weighted sum of segment CoMs of one `[K x 3]` pose.
pub fn dempster_com(joints: &[f64], table: &SegmentTable) -> Result<[f64; 3], StabilityError> {
    let joint = |j: usize| -> Result<[f64; 3], StabilityError> {
        let p = joints.get(3 * j..3 * j + 3).ok_or(StabilityError::MissingJoint(j))?;
        if p.iter().all(|v| v.is_finite()) {
            Ok([p[0], p[1], p[2]])
        } else {
            Err(StabilityError::MissingJoint(j))
        }
    };
    let mut com = [0.0; 3];
    for s in &table.segments {
        let a = joint(s.proximal)?;
        let b = joint(s.distal)?;
        for i in 0..3 {
            com[i] += s.mass_fraction * (a[i] + s.com_ratio * (b[i] - a[i]));
        }
    }
    Ok(com)
}
