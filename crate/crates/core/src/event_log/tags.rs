//! Event tag vocabulary.

pub const V_FRAME_START: &str = "V_FRAME_START";
pub const V_LIGHTPAYLOAD_START: &str = "V_LIGHTPAYLOAD_START";
pub const V_LIGHTPAYLOAD_END: &str = "V_LIGHTPAYLOAD_END";
pub const V_HEAVYPAYLOAD_START: &str = "V_HEAVYPAYLOAD_START";
pub const V_HEAVYPAYLOAD_END: &str = "V_HEAVYPAYLOAD_END";
pub const V_FRAME_END: &str = "V_FRAME_END";

pub const BE_LOAD_START: &str = "BE_LOAD_START";
pub const BE_LOAD_END: &str = "BE_LOAD_END";
pub const BE_LIGHT_SEND: &str = "BE_LIGHT_SEND";
pub const BE_LIGHT_END: &str = "BE_LIGHT_END";
pub const BE_RENDER_START: &str = "BE_RENDER_START";
pub const BE_RENDER_END: &str = "BE_RENDER_END";
pub const BE_HEAVY_SEND: &str = "BE_HEAVY_SEND";
pub const BE_HEAVY_END: &str = "BE_HEAVY_END";

/// Emitted immediately before `BE_LOAD_START`.
pub const BE_FRAME_START: &str = "BE_FRAME_START";

// Non-vocabulary tags used by the back end.
pub const BE_BUFFER_ACQUIRE: &str = "BE_BUFFER_ACQUIRE";
pub const BE_BUFFER_RELEASE: &str = "BE_BUFFER_RELEASE";
pub const BE_REDECOMPOSE: &str = "BE_REDECOMPOSE";
pub const BE_AXIS_FEEDBACK: &str = "BE_AXIS_FEEDBACK";
pub const V_AXIS_FEEDBACK: &str = "V_AXIS_FEEDBACK";

/// Viewer tags in per-frame order.
pub const VIEWER_TAGS: [&str; 6] = [
    V_FRAME_START,
    V_LIGHTPAYLOAD_START,
    V_LIGHTPAYLOAD_END,
    V_HEAVYPAYLOAD_START,
    V_HEAVYPAYLOAD_END,
    V_FRAME_END,
];

/// Back-end tags in per-frame order.
pub const BACKEND_TAGS: [&str; 8] = [
    BE_LOAD_START,
    BE_LOAD_END,
    BE_LIGHT_SEND,
    BE_LIGHT_END,
    BE_RENDER_START,
    BE_RENDER_END,
    BE_HEAVY_SEND,
    BE_HEAVY_END,
];

pub fn is_viewer_tag(tag: &str) -> bool {
    VIEWER_TAGS.contains(&tag)
}

pub fn is_backend_tag(tag: &str) -> bool {
    BACKEND_TAGS.contains(&tag)
}

pub fn is_vocabulary(tag: &str) -> bool {
    is_viewer_tag(tag) || is_backend_tag(tag)
}
