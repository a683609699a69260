#include "lod/grid.hpp"

#include <algorithm>
#include <stdexcept>

namespace lod {

TwoScaleMesh::TwoScaleMesh(DomainRect domain, int nxH, int nyH, int refine)
    : domain_(domain), nxH_(nxH), nyH_(nyH), refine_(refine) {
    if (domain.x1 <= domain.x0 || domain.y1 <= domain.y0)
        throw std::invalid_argument("TwoScaleMesh: degenerate domain rectangle");
    if (nxH < 1 || nyH < 1)
        throw std::invalid_argument("TwoScaleMesh: coarse cell counts must be positive");
    if (refine < 1)
        throw std::invalid_argument("TwoScaleMesh: refine must be >= 1");
}

TwoScaleMesh build_mesh(DomainRect domain, int nxH, int nyH, int refine) {
    return TwoScaleMesh(domain, nxH, nyH, refine);
}

std::array<int, 2> TwoScaleMesh::node_coords(Level lv, int node) const {
    const int w = nx(lv) + 1;
    return {node % w, node / w};
}

std::array<int, 2> TwoScaleMesh::cell_coords(Level lv, int cell) const {
    const int w = nx(lv);
    return {cell % w, cell / w};
}

std::array<double, 2> TwoScaleMesh::node_position(Level lv, int node) const {
    const auto [ix, iy] = node_coords(lv, node);
    return {domain_.x0 + ix * hx(lv), domain_.y0 + iy * hy(lv)};
}

std::array<double, 2> TwoScaleMesh::cell_midpoint(Level lv, int cell) const {
    const auto [cx, cy] = cell_coords(lv, cell);
    return {domain_.x0 + (cx + 0.5) * hx(lv), domain_.y0 + (cy + 0.5) * hy(lv)};
}

int TwoScaleMesh::sigma(Level lv, int cell, int local) const {
    if (cell < 0 || cell >= num_cells(lv))
        throw std::invalid_argument("sigma: cell index out of range");
    if (local < 0 || local > 3)
        throw std::invalid_argument("sigma: local index out of range");
    const auto [cx, cy] = cell_coords(lv, cell);
    static constexpr int dx[4] = {0, 1, 1, 0};
    static constexpr int dy[4] = {0, 0, 1, 1};
    return node_index(lv, cx + dx[local], cy + dy[local]);
}

int TwoScaleMesh::coarse_to_fine_node(int coarse_node) const {
    const auto [ix, iy] = node_coords(Level::Coarse, coarse_node);
    return node_index(Level::Fine, ix * refine_, iy * refine_);
}

NodeClass TwoScaleMesh::classify_node(Level lv, int node, const BoundarySpec& bc) const {
    if (node < 0 || node >= num_nodes(lv))
        throw std::invalid_argument("classify_node: node index out of range");
    const auto [ix, iy] = node_coords(lv, node);
    bool on_boundary = false;
    bool dirichlet = false;
    auto touch = [&](bool on_side, BcType type) {
        if (!on_side) return;
        on_boundary = true;
        if (type == BcType::Dirichlet) dirichlet = true;
    };
    touch(ix == 0, bc.left);
    touch(ix == nx(lv), bc.right);
    touch(iy == 0, bc.bottom);
    touch(iy == ny(lv), bc.top);
    // Dirichlet wins at corners shared with a Neumann side.
    if (dirichlet) return NodeClass::Dirichlet;
    return on_boundary ? NodeClass::Neumann : NodeClass::Interior;
}

Patch build_patch(const TwoScaleMesh& mesh, int ell, int k, const BoundarySpec& bc) {
    if (ell < 0 || ell >= mesh.num_cells(Level::Coarse))
        throw std::invalid_argument("build_patch: cell index out of range");
    if (k < 0) throw std::invalid_argument("build_patch: k must be >= 0");

    Patch p;
    p.ell = ell;
    p.k = k;

    const int nxH = mesh.nx(Level::Coarse);
    const int nyH = mesh.ny(Level::Coarse);
    const auto [cx, cy] = mesh.cell_coords(Level::Coarse, ell);

    // On a tensor grid the iterated vertex-neighbor union is the clamped box.
    const int bx0 = std::max(0, cx - k);
    const int bx1 = std::min(nxH - 1, cx + k);
    const int by0 = std::max(0, cy - k);
    const int by1 = std::min(nyH - 1, cy + k);

    for (int y = by0; y <= by1; ++y)
        for (int x = bx0; x <= bx1; ++x)
            p.coarse_cell_set.push_back(mesh.cell_index(Level::Coarse, x, y));

    // Active coarse nodes: nodes in the patch closure, minus Dirichlet nodes.
    for (int y = by0; y <= by1 + 1; ++y)
        for (int x = bx0; x <= bx1 + 1; ++x) {
            const int n = mesh.node_index(Level::Coarse, x, y);
            if (mesh.classify_node(Level::Coarse, n, bc) != NodeClass::Dirichlet)
                p.active_coarse_nodes.push_back(n);
        }

    // Active fine nodes: patch closure minus closure(dU \ Gamma_N). A node on
    // the patch boundary survives only if every patch side it touches lies on
    // a Neumann side of the domain.
    const int r = mesh.refine();
    const int fx0 = bx0 * r, fx1 = (bx1 + 1) * r;
    const int fy0 = by0 * r, fy1 = (by1 + 1) * r;
    const bool left_neumann = (bx0 == 0 && bc.left == BcType::Neumann);
    const bool right_neumann = (bx1 == nxH - 1 && bc.right == BcType::Neumann);
    const bool bottom_neumann = (by0 == 0 && bc.bottom == BcType::Neumann);
    const bool top_neumann = (by1 == nyH - 1 && bc.top == BcType::Neumann);
    for (int y = fy0; y <= fy1; ++y)
        for (int x = fx0; x <= fx1; ++x) {
            if (x == fx0 && !left_neumann) continue;
            if (x == fx1 && !right_neumann) continue;
            if (y == fy0 && !bottom_neumann) continue;
            if (y == fy1 && !top_neumann) continue;
            const int n = mesh.node_index(Level::Fine, x, y);
            if (mesh.classify_node(Level::Fine, n, bc) == NodeClass::Dirichlet) continue;
            p.active_fine_nodes.push_back(n);
        }

    // Corner nodes of K_ell in ascending global order: with lexicographic
    // numbering that is sigma order 0,1,3,2.
    p.element_coarse_nodes = {mesh.sigma(Level::Coarse, ell, 0), mesh.sigma(Level::Coarse, ell, 1),
                              mesh.sigma(Level::Coarse, ell, 3), mesh.sigma(Level::Coarse, ell, 2)};
    return p;
}

}  // namespace lod
