#include <doctest.h>

#include <cmath>

#include "reimagine/codec/codec.hpp"
#include "reimagine/core/rng.hpp"

using namespace reimagine;
using namespace reimagine::codec;

namespace {

Image random_image(int w, int h, Rng& rng) {
    Image img(w, h, 3);
    for (auto& v : img.data) v = rng.uniform();
    return img;
}

template <class V>
double energy(const V& v) {
    double e = 0.0;
    for (double x : v) e += x * x;
    return e;
}

double max_abs_diff(const Image& a, const Image& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    return worst;
}

}  // namespace

TEST_CASE("haar matrix is orthonormal") {
    for (int p : {1, 2, 4, 8}) {
        const MatrixRM h = haar_matrix(p);
        CHECK((h * h.transpose() - MatrixRM::Identity(p, p)).cwiseAbs().maxCoeff() < 1e-14);
    }
    CHECK_THROWS_AS(haar_matrix(3), std::invalid_argument);
}

TEST_CASE("encode with p = 1 is a channels-first copy") {
    Rng rng(1);
    const Image img = random_image(6, 4, rng);
    const LatentImage lat = encode(img, 1);
    REQUIRE(lat.channels() == 3);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 4; ++y) {
            for (int x = 0; x < 6; ++x) CHECK(lat.data[(c * 4 + y) * 6 + x] == img.at(x, y, c));
        }
    }
}

TEST_CASE("constant image at p = 2 has DC 1.0 and zero details") {
    const Image img(4, 4, 3, 0.5);
    const LatentImage lat = encode(img, 2);
    REQUIRE(lat.channels() == 12);
    for (int c = 0; c < 3; ++c) {
        for (int k = 0; k < 4; ++k) {
            const double expect = k == 0 ? 1.0 : 0.0;
            for (int cell = 0; cell < 4; ++cell) {
                CHECK(lat.data[(c * 4 + k) * 4 + cell] == doctest::Approx(expect).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("round trip, Parseval and linearity") {
    Rng rng(7);
    for (int p : {1, 2, 4, 8}) {
        const Image a = random_image(64, 64, rng);
        const Image b = random_image(64, 64, rng);
        const LatentImage la = encode(a, p);
        CHECK(max_abs_diff(decode(la), a) < 1e-6);
        CHECK(std::abs(energy(la.data.storage()) - energy(a.data)) < 1e-5);

        Image mix(64, 64, 3);
        for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = 0.3 * a.data[i] - 1.7 * b.data[i];
        const LatentImage lb = encode(b, p);
        const LatentImage lm = encode(mix, p);
        double worst = 0.0;
        for (std::size_t i = 0; i < lm.data.size(); ++i) {
            worst = std::max(worst, std::abs(lm.data[i] - (0.3 * la.data[i] - 1.7 * lb.data[i])));
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("decode of zero latent is a zero image") {
    LatentImage z{Tensor({48, 2, 3}), 4};
    const Image img = decode(z);
    CHECK(img.width == 12);
    CHECK(img.height == 8);
    for (double v : img.data) CHECK(v == 0.0);
}

TEST_CASE("codec errors") {
    CHECK_THROWS_AS(encode(Image(10, 8, 3), 4), std::invalid_argument);
    LatentImage bad{Tensor({47, 2, 2}), 4};
    CHECK_THROWS_AS(decode(bad), std::invalid_argument);
    CHECK_THROWS_AS(encode_video({}, 2), std::invalid_argument);
    CHECK_THROWS_AS(encode_video({Image(8, 8, 3), Image(16, 8, 3)}, 2), std::invalid_argument);
}

TEST_CASE("video codec") {
    Rng rng(11);
    std::vector<Image> frames;
    for (int t = 0; t < 4; ++t) frames.push_back(random_image(16, 8, rng));
    const LatentVideo v = encode_video(frames, 4);
    CHECK(v.frames() == 4);
    CHECK(v.channels() == 48);
    const auto back = decode_video(v);
    REQUIRE(back.size() == 4);
    for (int t = 0; t < 4; ++t) CHECK(max_abs_diff(back[t], frames[t]) < 1e-6);

    const LatentVideo single = encode_video({frames[0]}, 4);
    const LatentImage direct = encode(frames[0], 4);
    CHECK(single.frame(0).data.storage() == direct.data.storage());
}
