//! Per-sample work distribution. With the `parallel` feature a rayon pool
//! maps samples concurrently; results always come back in sample order, so
//! any reduction done by the caller is identical to the serial run.

use crate::error::Result;

pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    pub fn serial() -> Self {
        Executor {
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// `threads <= 1` is serial. Without the `parallel` feature every
    /// request falls back to serial.
    pub fn with_threads(threads: usize) -> Result<Self> {
        if threads <= 1 {
            return Ok(Executor::serial());
        }
        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| crate::Error::Config(format!("cannot start thread pool: {e}")))?;
            Ok(Executor { pool: Some(pool) })
        }
        #[cfg(not(feature = "parallel"))]
        {
            log::warn!("built without the `parallel` feature; ignoring threads={threads}");
            Ok(Executor::serial())
        }
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// `(0..n).map(f)`, in order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Executor::serial()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let serial = Executor::serial().map(100, |i| i * i);
        let par = Executor::with_threads(4).unwrap().map(100, |i| i * i);
        assert_eq!(serial, par);
    }
}
