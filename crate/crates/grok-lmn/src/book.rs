//! placeholder for book doctests
