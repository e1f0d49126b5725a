pub mod identities;
pub mod norms;
pub mod report;

pub use identities::{
    martingale_isometry, verify_conditional, verify_general_convex, verify_hardy_stein,
    verify_local_time_characterization,
};
pub use norms::{
    bdg_constant, conditional_hardy_norm, exhaustion, hardy_norm, lp_hardy_norm, lp_square_report, p1_example,
    square_function, SquareFunction,
};
pub use report::{Check, CheckKind, IdentityId, IdentityReport, Pathway, TermValue, Total, VerifyOptions};
