use std::fmt;

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad config, flags, or input data. Exit 1.
    Validation(String),
    /// The run itself failed. Exit 2.
    Runtime(String),
    /// An applicable bound was violated. Exit 3.
    Theory(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Theory(_) => 3,
        }
    }

    /// Classifies a library error, prefixing `context`.
    pub fn from_core(context: &str, e: restartsc::Error) -> Self {
        let msg = format!("{context}: {e}");
        if e.is_validation() {
            Failure::Validation(msg)
        } else {
            Failure::Runtime(msg)
        }
    }

    pub fn write(path: &std::path::Path, e: std::io::Error) -> Self {
        Failure::Runtime(format!("cannot write {}: {e}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) | Failure::Theory(m) => f.write_str(m),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::Validation(String::new()).exit_code(), 1);
        assert_eq!(Failure::Runtime(String::new()).exit_code(), 2);
        assert_eq!(Failure::Theory(String::new()).exit_code(), 3);
        let e = restartsc::Error::EmptyCluster(0);
        assert_eq!(Failure::from_core("run", e).exit_code(), 2);
        let e = restartsc::Error::EmptyDataset;
        assert_eq!(Failure::from_core("dataset", e).exit_code(), 1);
    }
}
