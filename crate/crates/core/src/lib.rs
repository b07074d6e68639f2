//! A task-parallel runtime with data-dependence ordering between sibling
//! tasks and two interchangeable ways of maintaining the dependence graph:
//! synchronously by the threads that create and finish tasks, or
//! asynchronously by idle threads acting as managers (DDAST).
//!
//! ```
//! use taskrt::{DependenceClause, Runtime, RuntimeConfig, RuntimeMode};
//!
//! let rt = Runtime::start(RuntimeConfig::new(4, RuntimeMode::Ddast)).unwrap();
//! let cell = std::sync::Arc::new(std::sync::atomic::AtomicU64::new(1));
//! for _ in 0..3 {
//!     let cell = cell.clone();
//!     rt.spawn(&[DependenceClause::inout(taskrt::Token::of(&*cell))], move |_| {
//!         let v = cell.load(std::sync::atomic::Ordering::Relaxed);
//!         cell.store(v * 2, std::sync::atomic::Ordering::Relaxed);
//!     })
//!     .unwrap();
//! }
//! rt.taskwait();
//! assert_eq!(cell.load(std::sync::atomic::Ordering::Relaxed), 8);
//! let stats = rt.shutdown().unwrap();
//! assert_eq!(stats.created, 3);
//! ```

pub mod bench;
pub mod ddast;
pub mod dispatcher;
pub mod graph;
pub mod instrument;
pub mod mailbox;
pub mod pool;
pub mod runtime;
pub mod task;

pub use ddast::{default_config, DdastConfig};
pub use instrument::{Counter, Trace, TraceEvent};
pub use runtime::{RunStats, Runtime, RuntimeConfig, RuntimeError, RuntimeMode, TaskContext};
pub use task::{DependenceClause, Direction, TaskRef, TaskState, Token};
