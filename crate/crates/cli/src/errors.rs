//! Exit-code classification: validation failures (bad inputs, contract
//! violations) exit 1; runtime/I-O failures exit 2.

use std::fmt;

#[derive(Debug)]
pub enum CmdError {
    Validation(String),
    Runtime(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Validation(_) => 1,
            CmdError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Validation(msg) | CmdError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

pub fn validation(msg: impl Into<String>) -> CmdError {
    CmdError::Validation(msg.into())
}

fn classify(is_validation: bool, msg: String) -> CmdError {
    if is_validation {
        CmdError::Validation(msg)
    } else {
        CmdError::Runtime(msg)
    }
}

impl From<dsxray_core::dataset::DataError> for CmdError {
    fn from(e: dsxray_core::dataset::DataError) -> Self {
        classify(e.is_validation(), e.to_string())
    }
}

impl From<dsxray_core::geometry::GeometryError> for CmdError {
    fn from(e: dsxray_core::geometry::GeometryError) -> Self {
        classify(e.is_validation(), e.to_string())
    }
}

impl From<dsxray_core::xray::XRayError> for CmdError {
    fn from(e: dsxray_core::xray::XRayError) -> Self {
        classify(e.is_validation(), e.to_string())
    }
}

impl From<dsxray_core::sampler::SamplerError> for CmdError {
    fn from(e: dsxray_core::sampler::SamplerError) -> Self {
        classify(e.is_validation(), e.to_string())
    }
}

impl From<dsxray_core::fidelity::FidelityError> for CmdError {
    fn from(e: dsxray_core::fidelity::FidelityError) -> Self {
        classify(e.is_validation(), e.to_string())
    }
}

impl From<dsxray_client::ClientError> for CmdError {
    fn from(e: dsxray_client::ClientError) -> Self {
        classify(e.is_validation(), e.to_string())
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Runtime(e.to_string())
    }
}
