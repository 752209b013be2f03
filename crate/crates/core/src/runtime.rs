//! Fan-out of independent per-subdomain tasks with results collected by index.

use std::any::Any;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use crate::error::{Error, Result};

/// A fixed-width pool of scoped worker threads.
///
/// Tasks pull indices from a shared counter; every result lands in the slot of
/// its index, so the output is the same for any width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskPool {
    workers: usize,
}

impl TaskPool {
    /// `workers = 0` selects the available hardware parallelism.
    pub fn new(workers: usize) -> Self {
        let workers = if workers == 0 {
            thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            workers
        };
        Self { workers }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Runs `f(k, &inputs[k])` for every `k` and returns the results in `k`
    /// order. The lowest failing `k` determines the returned error; a panic
    /// becomes [`Error::TaskPanicked`].
    pub fn map<I, T, F>(&self, inputs: &[I], f: F) -> Result<Vec<T>>
    where
        I: Sync,
        T: Send,
        F: Fn(usize, &I) -> Result<T> + Sync,
    {
        let run = |k: usize| -> Result<T> {
            match panic::catch_unwind(AssertUnwindSafe(|| f(k, &inputs[k]))) {
                Ok(result) => result,
                Err(payload) => Err(Error::TaskPanicked {
                    k,
                    message: panic_message(payload.as_ref()),
                }),
            }
        };

        let width = self.workers.min(inputs.len());
        if width <= 1 {
            return (0..inputs.len()).map(run).collect();
        }

        let slots: Vec<Mutex<Option<Result<T>>>> = inputs.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        thread::scope(|scope| {
            for _ in 0..width {
                scope.spawn(|| loop {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    if k >= inputs.len() {
                        break;
                    }
                    let result = run(k);
                    *slots[k].lock().unwrap_or_else(|e| e.into_inner()) = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| {
                slot.into_inner()
                    .unwrap_or_else(|e| e.into_inner())
                    .expect("every slot is filled before the scope ends")
            })
            .collect()
    }
}

impl Default for TaskPool {
    fn default() -> Self {
        Self::new(1)
    }
}

/// [`TaskPool::map`] on a throwaway pool.
pub fn parallel_map<I, T, F>(inputs: &[I], workers: usize, f: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(usize, &I) -> Result<T> + Sync,
{
    if workers == 0 {
        return Err(Error::InvalidConfig("worker count must be at least 1".into()));
    }
    TaskPool::new(workers).map(inputs, f)
}

fn panic_message(payload: &(dyn Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_are_ordered_for_every_width() {
        let inputs: Vec<u64> = (0..37).collect();
        let expected: Vec<u64> = inputs.iter().map(|x| x * x + 1).collect();
        for workers in [1, 2, 3, 8, 64] {
            let got = parallel_map(&inputs, workers, |_, &x| Ok(x * x + 1)).unwrap();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn single_task_equals_direct_call() {
        let got = parallel_map(&[5.0_f64], 4, |k, x| Ok((k, x.sqrt()))).unwrap();
        assert_eq!(got, vec![(0, 5.0_f64.sqrt())]);
    }

    #[test]
    fn lowest_failing_index_wins() {
        let inputs = [0, 1, 2, 3, 4];
        for workers in [1, 4] {
            let err = parallel_map(&inputs, workers, |k, _| {
                if k >= 2 {
                    Err(Error::MissingSubspace(k))
                } else {
                    Ok(k)
                }
            })
            .unwrap_err();
            assert_eq!(err, Error::MissingSubspace(2));
        }
    }

    #[test]
    fn panics_become_errors() {
        let prev = panic::take_hook();
        panic::set_hook(Box::new(|_| {}));
        let result = parallel_map(&[0, 1, 2, 3], 4, |k, _| {
            if k == 2 {
                panic!("boom in task two");
            }
            Ok(k)
        });
        panic::set_hook(prev);
        assert_eq!(
            result.unwrap_err(),
            Error::TaskPanicked {
                k: 2,
                message: "boom in task two".into()
            }
        );
    }

    #[test]
    fn zero_workers_rejected_for_explicit_map() {
        assert!(parallel_map(&[1], 0, |_, &x: &i32| Ok(x)).is_err());
        assert!(TaskPool::new(0).workers() >= 1);
    }
}
