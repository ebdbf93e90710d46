#include "bimdiff/model.hpp"

namespace bimdiff {

template class Mlp<double>;
template class Mlp<float>;
template class EpisodicStore<double>;
template class EpisodicStore<float>;
template class BimDiffModel<double>;
template class BimDiffModel<float>;

}  // namespace bimdiff
