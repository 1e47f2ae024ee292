"""FacetForge: facet-wise abstract generation and evaluation for biomedical full texts."""
