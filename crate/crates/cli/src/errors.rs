use pcrf::Error;

/// Invalid invocation or configuration.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const INTERNAL: u8 = 3;

/// 1 for usage and configuration errors, 2 for unreadable or invalid data,
/// 3 for anything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::ZeroTrees => USAGE,
                Error::DegenerateFrame { .. }
                | Error::LandmarkIndex { .. }
                | Error::EmptyImage
                | Error::TooFewLabels { .. }
                | Error::EmptySequence
                | Error::EmptyPoseSet
                | Error::Parse { .. }
                | Error::Format(_)
                | Error::Image { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_) => DATA,
                Error::EmptyNode => INTERNAL,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return DATA;
        }
    }
    INTERNAL
}
