#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace lod {

/// Axis-aligned rectangular computational domain.
struct DomainRect {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 1.0;
    double y1 = 1.0;
};

enum class BcType { Dirichlet, Neumann };

/// Per-side boundary condition tags. At least one side must be Dirichlet.
struct BoundarySpec {
    BcType left = BcType::Dirichlet;
    BcType right = BcType::Dirichlet;
    BcType bottom = BcType::Dirichlet;
    BcType top = BcType::Dirichlet;

    static BoundarySpec all_dirichlet() { return {}; }
};

enum class NodeClass { Interior, Dirichlet, Neumann };

enum class Level { Coarse, Fine };

/// Structured tensor-product quadrilateral mesh pair: a coarse grid of
/// nxH x nyH cells and its uniform refinement with `refine` fine cells per
/// coarse cell per axis. Nodes and cells are numbered lexicographically
/// (x fastest) on both levels.
class TwoScaleMesh {
  public:
    TwoScaleMesh(DomainRect domain, int nxH, int nyH, int refine);

    const DomainRect& domain() const { return domain_; }
    int nx(Level lv) const { return lv == Level::Coarse ? nxH_ : nxH_ * refine_; }
    int ny(Level lv) const { return lv == Level::Coarse ? nyH_ : nyH_ * refine_; }
    int refine() const { return refine_; }

    int num_nodes(Level lv) const { return (nx(lv) + 1) * (ny(lv) + 1); }
    int num_cells(Level lv) const { return nx(lv) * ny(lv); }

    double hx(Level lv) const { return (domain_.x1 - domain_.x0) / nx(lv); }
    double hy(Level lv) const { return (domain_.y1 - domain_.y0) / ny(lv); }

    int node_index(Level lv, int ix, int iy) const { return iy * (nx(lv) + 1) + ix; }
    int cell_index(Level lv, int cx, int cy) const { return cy * nx(lv) + cx; }
    std::array<int, 2> node_coords(Level lv, int node) const;
    std::array<int, 2> cell_coords(Level lv, int cell) const;

    std::array<double, 2> node_position(Level lv, int node) const;
    std::array<double, 2> cell_midpoint(Level lv, int cell) const;

    /// Local-to-global node map; local corners are counterclockwise from the
    /// lower-left: (0,0),(1,0),(1,1),(0,1).
    int sigma(Level lv, int cell, int local) const;

    /// Fine node with the same coordinates as a given coarse node.
    int coarse_to_fine_node(int coarse_node) const;

    NodeClass classify_node(Level lv, int node, const BoundarySpec& bc) const;

  private:
    DomainRect domain_;
    int nxH_;
    int nyH_;
    int refine_;
};

TwoScaleMesh build_mesh(DomainRect domain, int nxH, int nyH, int refine);

/// k-layer coarse-cell neighborhood of a coarse cell, with the node index
/// lists that realize the patch-local restriction operators.
struct Patch {
    int ell = 0;
    int k = 0;
    std::vector<int> coarse_cell_set;      // sorted cells of U_k
    std::vector<int> active_coarse_nodes;  // sorted, excludes Dirichlet nodes
    std::vector<int> active_fine_nodes;    // sorted, patch interior plus Neumann trace
    std::array<int, 4> element_coarse_nodes{};  // ascending corner indices of K_ell
};

Patch build_patch(const TwoScaleMesh& mesh, int ell, int k, const BoundarySpec& bc);

}  // namespace lod
