"""Clustering-based hard negative sampling lab: python surface.

The heavy lifting lives in the C++ extension module ``_chns``; this package
re-exports its operations. Installed wheels carry the extension inside the
package; development builds leave it on sys.path as a top-level module.
"""

try:
    from . import _chns as _ext
except ImportError:  # development build: extension next to the build tree
    import _chns as _ext

ChnsError = _ext.ChnsError
adjusted_rand_index = _ext.adjusted_rand_index
aam_softmax_loss = _ext.aam_softmax_loss
centroid = _ext.centroid
chns_sample_batch = _ext.chns_sample_batch
compute_eer = _ext.compute_eer
compute_min_dcf = _ext.compute_min_dcf
contrastive_loss = _ext.contrastive_loss
contrastive_loss_grad_check = _ext.contrastive_loss_grad_check
cosine_sim = _ext.cosine_sim
generate_corpus = _ext.generate_corpus
hardening_weight = _ext.hardening_weight
kmeans = _ext.kmeans
lr_at = _ext.lr_at
normalize = _ext.normalize
pairwise_similarity_matrix = _ext.pairwise_similarity_matrix
sq_euclidean = _ext.sq_euclidean

__all__ = [
    "ChnsError",
    "adjusted_rand_index",
    "aam_softmax_loss",
    "centroid",
    "chns_sample_batch",
    "compute_eer",
    "compute_min_dcf",
    "contrastive_loss",
    "contrastive_loss_grad_check",
    "cosine_sim",
    "generate_corpus",
    "hardening_weight",
    "kmeans",
    "lr_at",
    "normalize",
    "pairwise_similarity_matrix",
    "sq_euclidean",
]
