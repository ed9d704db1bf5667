use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// Bad config, bad CSV, unreadable input files.
    Schema,
    Computation,
    NotConverged,
    Io,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn schema(message: impl Into<String>) -> Self {
        Self { kind: Kind::Schema, message: message.into() }
    }

    pub fn not_converged(message: impl Into<String>) -> Self {
        Self { kind: Kind::NotConverged, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Schema => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: Kind,
            message: &'a str,
            exit_code: i32,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            error: Body<'a>,
        }
        let doc = Doc { error: Body { kind: self.kind, message: &self.message, exit_code: self.exit_code() } };
        serde_json::to_string(&doc).unwrap_or_else(|_| format!("{{\"error\":{{\"message\":{:?}}}}}", self.message))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

impl From<gpsobol_core::Error> for CliError {
    fn from(e: gpsobol_core::Error) -> Self {
        use gpsobol_core::Error as E;
        let kind = match e {
            E::InvalidConfig(_) | E::InvalidDistribution(_) | E::Serialization(_) => Kind::Schema,
            E::QuadratureNotConverged { .. } => Kind::NotConverged,
            _ => Kind::Computation,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { kind: Kind::Io, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
