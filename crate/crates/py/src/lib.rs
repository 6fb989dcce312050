use pyo3::prelude::*;

/// Python bindings: build an encrypted index in memory and query it with
/// every party running in-process.
#[pymodule]
mod encgraph_py {
    use std::path::PathBuf;

    use pyo3::exceptions::{PyRuntimeError, PyValueError};
    use pyo3::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use encgraph::crypto::MasterKeyBundle;
    use encgraph::edb::build_edb;
    use encgraph::frontend;
    use encgraph::graph::{build_inverted_index, load_edge_list, InvertedIndex, PlainEngine, WeightPolicy};
    use encgraph::planner::{parse_sexpr, Filter, QueryRequest};
    use encgraph::server::ClusterConfig;
    use encgraph::Error;

    fn py_err(e: Error) -> PyErr {
        match e {
            Error::Parse { .. } | Error::Plan(_) => PyValueError::new_err(e.to_string()),
            _ => PyRuntimeError::new_err(e.to_string()),
        }
    }

    fn request(sexpr: &str, top_k: Option<usize>, sort: bool, nested_top_k: Option<usize>) -> PyResult<QueryRequest> {
        let mut q = QueryRequest::parse(sexpr).map_err(py_err)?;
        q.filter = Filter { sort, top_k, formula: None };
        if let Some(k) = nested_top_k {
            q.nested_filter = Filter::top_k(k);
        }
        Ok(q)
    }

    #[pymodule_export]
    const VERSION: &str = env!("CARGO_PKG_VERSION");

    /// Canonical text of a query; raises ValueError with the position on bad input.
    #[pyfunction]
    fn parse_query(text: &str) -> PyResult<String> {
        parse_sexpr(text).map(|e| e.to_string()).map_err(py_err)
    }

    #[pyclass(unsendable)]
    struct LocalCluster {
        index: InvertedIndex,
        inner: Option<frontend::LocalCluster>,
    }

    #[pymethods]
    impl LocalCluster {
        /// Loads a `src dst weight` edge list and starts two clusters of `shards` servers.
        #[new]
        #[pyo3(signature = (edges, shards = 2, seed = 0, edge_type = "friend"))]
        fn new(edges: PathBuf, shards: usize, seed: u64, edge_type: &str) -> PyResult<Self> {
            let graph = load_edge_list(&edges, edge_type, WeightPolicy::FromFile).map_err(py_err)?;
            let index = build_inverted_index(&graph);
            let keys = MasterKeyBundle::generate(&mut ChaCha20Rng::seed_from_u64(seed));
            let mut cfg = ClusterConfig::local(shards);
            cfg.server.precompute = Vec::new();
            cfg.pool.scalar = 64;
            let edb = build_edb(&index, &keys, &cfg.partition(), seed).map_err(py_err)?;
            let inner = frontend::LocalCluster::start(&edb, &keys, cfg).map_err(py_err)?;
            Ok(LocalCluster { index, inner: Some(inner) })
        }

        #[getter]
        fn shards(&self) -> usize {
            self.inner.as_ref().map_or(0, |c| c.shards())
        }

        #[getter]
        fn entries(&self) -> usize {
            self.index.total_entries()
        }

        /// Encrypted evaluation. Returns entity ids, best first when sorted.
        #[pyo3(signature = (sexpr, top_k = None, sort = false, nested_top_k = None))]
        fn query(&self, py: Python<'_>, sexpr: &str, top_k: Option<usize>, sort: bool, nested_top_k: Option<usize>) -> PyResult<Vec<u64>> {
            let req = request(sexpr, top_k, sort, nested_top_k)?;
            let lc = self.inner.as_ref().ok_or_else(|| PyRuntimeError::new_err("cluster is shut down"))?;
            let ids = py.detach(|| lc.query(&req)).map_err(py_err)?;
            Ok(ids.into_iter().map(|i| i.0).collect())
        }

        /// Plaintext evaluation of the same query.
        #[pyo3(signature = (sexpr, top_k = None, sort = false, nested_top_k = None))]
        fn plain_query(&self, sexpr: &str, top_k: Option<usize>, sort: bool, nested_top_k: Option<usize>) -> PyResult<Vec<(u64, u32)>> {
            let req = request(sexpr, top_k, sort, nested_top_k)?;
            let out = PlainEngine::new(&self.index).query(&req).map_err(py_err)?;
            Ok(out.into_iter().map(|s| (s.id.0, s.score)).collect())
        }

        /// Exponentiations performed by each cluster since start.
        fn exponentiations(&self) -> (u64, u64) {
            self.inner.as_ref().map_or((0, 0), |c| (c.exponentiations(0), c.exponentiations(1)))
        }

        fn shutdown(&mut self) -> PyResult<()> {
            match self.inner.take() {
                Some(c) => c.shutdown().map_err(py_err),
                None => Ok(()),
            }
        }

        fn __enter__(slf: Py<Self>) -> Py<Self> {
            slf
        }

        fn __exit__(&mut self, _ty: Py<PyAny>, _value: Py<PyAny>, _tb: Py<PyAny>) -> PyResult<bool> {
            self.shutdown()?;
            Ok(false)
        }
    }
}
