use super::DataError;

/// Joint indices used to place one foot's insole grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FootJoints {
    pub ankle: usize,
    pub toe: usize,
    pub heel: usize,
}

/// Joint layout of the pose input. The default is OpenPose BODY25.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    pub joints: usize,
    pub hip: usize,
    pub left: FootJoints,
    pub right: FootJoints,
}

impl Default for Skeleton {
    fn default() -> Self {
        Skeleton::body25()
    }
}

impl Skeleton {
    pub fn body25() -> Self {
        Skeleton {
            joints: 25,
            hip: 8,
            left: FootJoints {
                ankle: 14,
                toe: 19,
                heel: 21,
            },
            right: FootJoints {
                ankle: 11,
                toe: 22,
                heel: 24,
            },
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let all = [
            self.hip,
            self.left.ankle,
            self.left.toe,
            self.left.heel,
            self.right.ankle,
            self.right.toe,
            self.right.heel,
        ];
        if let Some(bad) = all.iter().find(|&&j| j >= self.joints) {
            return Err(DataError::Format(format!(
                "skeleton joint index {bad} out of range for {} joints",
                self.joints
            )));
        }
        Ok(())
    }

    /// `joints=25 hip=8 left=14,19,21 right=11,22,24` (ankle, toe, heel).
    pub fn describe(&self) -> String {
        let f = |j: &FootJoints| format!("{},{},{}", j.ankle, j.toe, j.heel);
        format!(
            "joints={} hip={} left={} right={}",
            self.joints,
            self.hip,
            f(&self.left),
            f(&self.right)
        )
    }

    /// Parses the fields of [`Skeleton::describe`]; omitted fields keep
    /// their BODY25 values.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut s = Skeleton::body25();
        let num = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| DataError::Format(format!("bad skeleton index {v:?}")))
        };
        let foot = |v: &str| -> Result<FootJoints, DataError> {
            let parts: Vec<&str> = v.split(',').collect();
            if parts.len() != 3 {
                return Err(DataError::Format(format!("foot joints must be ankle,toe,heel: {v:?}")));
            }
            Ok(FootJoints {
                ankle: num(parts[0])?,
                toe: num(parts[1])?,
                heel: num(parts[2])?,
            })
        };
        for token in text.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| DataError::Format(format!("bad skeleton field {token:?}")))?;
            match k {
                "joints" => s.joints = num(v)?,
                "hip" => s.hip = num(v)?,
                "left" => s.left = foot(v)?,
                "right" => s.right = foot(v)?,
                _ => return Err(DataError::Format(format!("unknown skeleton field {k:?}"))),
            }
        }
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn describe_round_trips() {
        let s = Skeleton::body25();
        assert_eq!(Skeleton::parse(&s.describe()).unwrap(), s);
        let small = Skeleton::parse("joints=5 hip=0 left=1,1,1 right=2,3,4").unwrap();
        assert_eq!(small.joints, 5);
        assert!(Skeleton::parse("joints=5").is_err());
        assert!(Skeleton::parse("spine=3").is_err());
    }
}
