#pragma once

#include <otbary/grid.hpp>
#include <otbary/measure.hpp>
#include <otbary/ellipse.hpp>
#include <otbary/kernel.hpp>
#include <otbary/sinkhorn.hpp>
#include <otbary/gaussian_oracle.hpp>
#include <otbary/barycenter.hpp>
#include <otbary/embedding.hpp>
